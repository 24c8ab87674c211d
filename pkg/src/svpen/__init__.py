"""Self-validated physics-embedding network: learned inverse models checked and corrected by a forward model."""
__version__ = "0.1.0"
