"""Scoring toolkit for generated 3D indoor scenes.

Scores scenes against annotated constraints (counts, attributes, spatial
relations) and physical common-sense checks (collision, support,
navigability, accessibility, bounds).
"""

__version__ = "0.1.0"
