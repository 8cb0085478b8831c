"""Dataset-bias auditing with deliberately label-uninformative probes."""

__version__ = "0.1.0"
