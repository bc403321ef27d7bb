"""Tabulation hashing lab: balanced allocations, cuckoo hashing, witness structures."""

__version__ = "0.1.0"
