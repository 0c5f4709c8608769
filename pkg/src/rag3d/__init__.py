"""rag3d: retrieval-augmented generation of executable 3D modeling scripts."""

__version__ = "0.1.0"
