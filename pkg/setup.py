from setuptools import setup, find_packages

setup(
    name="metasdf-shape-lab",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "examples"]),
    description="Meta-learned signed distance functions with auto-decoder and CNP baselines",
    python_requires=">=3.8",
    install_requires=["numpy", "pandas", "matplotlib", "scipy"],
    extras_require={"test": ["pytest", "hypothesis"]},
    entry_points={"console_scripts": ["metasdf=metasdf.main:main"]},
)
