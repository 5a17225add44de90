from setuptools import setup

setup(
    name="climb",
    version="0.1.0",
    description="Coupled LMN block-term decomposition for hyperspectral/multispectral fusion",
    packages=["climb", "climb.presets", "tensorkit"],
    package_dir={"": "src"},
    package_data={"climb.presets": ["*.json"]},
    python_requires=">=3.10",
    install_requires=[
        "numpy >= 1.23",
        "scipy >= 1.9",
        "pandas >= 1.5",
        "scikit-image >= 0.19",
        "joblib >= 1.2",
    ],
    extras_require={"test": ["pytest >= 7"]},
    entry_points={"console_scripts": ["climb = climb.cli:main"]},
)
