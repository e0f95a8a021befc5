"""querypulse: predict e-commerce search query performance (SAT/DSAT) from
aggregated user-interaction signals."""

__version__ = "0.1.0"
