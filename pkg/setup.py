#!/usr/bin/env python3
"""Setup script for voltelab package."""

from os.path import join as pjoin

from setuptools import find_packages, setup

setup(
    packages=find_packages(),
    package_data={
        "voltelab": [
            pjoin("data", "profiles", "*.json"),
            pjoin("data", "fingerprints", "*.json"),
            "py.typed",
        ],
    },
)
