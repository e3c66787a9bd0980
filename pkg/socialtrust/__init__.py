"""Socialtrust - trust levels for phone contacts derived from communication logs.

Calibrates activity quantiles against rated survey partners, predicts trust for
unrated contacts and simulates devices establishing trust over mutual contacts
without revealing their address books.
"""

__version__ = "0.1.0"
__author__ = "Socialtrust Contributors"
