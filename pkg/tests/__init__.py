"""Tests for MeshCore API."""
