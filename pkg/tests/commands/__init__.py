"""Tests for command wrappers."""
