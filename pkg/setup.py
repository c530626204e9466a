#!/usr/bin/env python3
"""Setup script for the meanfield-social package."""

from setuptools import setup

# Configuration lives in pyproject.toml; setup.py remains for legacy tooling
setup()
