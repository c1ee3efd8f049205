"""Single-pixel imaging simulation with cake-cutting ordered Hadamard patterns."""

__version__ = "0.1.0"
