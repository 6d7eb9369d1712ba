from setuptools import setup

setup(
    name="pace-prompt-editor",
    version="0.1.0",
    description="Actor-critic prompt editing for large language models, with a benchmark harness and CLI",
    py_modules=[
        "bench_harness",
        "data_models",
        "llm_gateway",
        "optimizer_data_models",
        "pace_cli",
        "pace_config",
        "pace_errors",
        "pace_langgraph",
        "pace_templates",
        "perturbation",
        "run_artifacts",
        "scoring",
    ],
    install_requires=[
        "langgraph>=0.2.0",
        "langchain-core>=0.2.0",
        "langchain-openai>=0.1.0",
        "openai>=1.0.0",
        "pydantic>=2.4.0",
        "pandas>=2.0.0",
        "tabulate>=0.9.0",
        "python-dotenv>=1.0.0"
    ],
    entry_points={
        "console_scripts": ["pace=pace_cli:main"],
    },
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.9",
    ],
)
