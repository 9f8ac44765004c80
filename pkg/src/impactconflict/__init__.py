"""Impact conflict detection for IoT services in multi-resident smart homes."""

__version__ = "0.1.0"
