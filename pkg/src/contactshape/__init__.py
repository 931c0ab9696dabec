"""Contact process in a random environment: exact simulation, essential hitting times and shape statistics."""

__version__ = "0.1.0"
