from setuptools import setup, find_packages

setup(
    name="indexacao-corpus",
    version="0.1.0",
    description="Indexação full-text, busca por frase e auditoria de termos em corpora",
    packages=find_packages(where="src") + find_packages(include=["config", "config.*", "cli", "cli.*"]),
    package_dir={"": "src", "config": "config", "cli": "cli"},
    package_data={"config": ["config.yaml"]},
    install_requires=[
        "pandas",
        "numpy",
        "pyarrow",
        "pyyaml",
        "pydantic>=2",
        "regex",
        "requests",
        "tenacity",
        "click",
        "rich",
        "colorlog",
        "psutil",
        "fastapi",
        "uvicorn",
        "plotly",
    ],
    entry_points={
        "console_scripts": [
            "indexacao=cli.main:cli",
        ],
    },
    python_requires=">=3.9",
)
