"""Context-aware exit-choice modeling via teacher-student distillation."""

__version__ = "0.1.0"
