"""Explicit coarse embeddings of hyperbolic, tree-graded and relatively hyperbolic graphs into l^p."""
__version__ = "0.1.0"
