"""Matrix product state approximations of chiral WZW and free-boson correlators."""

__version__ = "0.1.0"
