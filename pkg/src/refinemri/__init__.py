"""Two-stage reconstruction and visual refinement of undersampled MRI."""

__version__ = "0.1.0"
