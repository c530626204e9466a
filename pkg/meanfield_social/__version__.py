"""Meanfield Social version information."""

__version__ = "0.1.0"
__author__ = "Meanfield Social Developers"
__email__ = "dev@meanfield-social.org"
__license__ = "MIT"
