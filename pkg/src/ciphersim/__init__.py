"""HE-friendly stream ciphers (HERA, Rubato) and a cycle model of their key-generation hardware."""

__version__ = "0.1.0"
