"""Tests for socialtrust."""
