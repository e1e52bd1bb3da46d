from pathlib import Path

from setuptools import find_packages, setup

requirements = [
    line.strip()
    for line in Path(__file__).with_name("requirements.txt").read_text().splitlines()
    if line.strip() and not line.startswith("#")
]

setup(
    name="hetbandit",
    version="0.1.0",
    packages=find_packages(include=["hetbandit", "hetbandit.*"]),
    install_requires=requirements,
)
