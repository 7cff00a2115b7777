"""Commuter-behavior analytics from raw location pings.

Infers per-user home and work anchors by density clustering, resolves work
anchors to named workplaces and industry categories, and reports workday
statistics across configurable analysis windows.
"""

__version__ = "0.1.0"
