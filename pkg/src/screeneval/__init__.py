"""Adjudicated reference standards and grader-vs-algorithm evaluation for
diabetic retinopathy screening programs."""

__version__ = "0.1.0"
