"""Multicontact geometry for dissipative field theories."""
__version__ = "0.1.0"
