"""Tests for fractex."""
