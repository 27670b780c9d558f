"""Active-learning-driven synthetic QA generation for low-resource extractive reading."""

__version__ = "0.1.0"
