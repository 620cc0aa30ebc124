"""gem-trust: distributed goal evaluation for function-free trust-management policies."""

__version__ = "0.1.0"
