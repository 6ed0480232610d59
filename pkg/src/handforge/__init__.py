"""Domain-randomized RGB-D hand scene generator and detection evaluation tools."""

__version__ = "0.1.0"
