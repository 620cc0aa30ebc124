"""Test suite for gem-trust."""
