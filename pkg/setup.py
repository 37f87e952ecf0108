from setuptools import setup, find_packages

# Read the README file
def read_readme():
    with open("README.md", "r", encoding="utf-8") as fh:
        return fh.read()

# Read requirements
def read_requirements():
    with open("requirements.txt", "r", encoding="utf-8") as fh:
        return [line.split("#")[0].strip() for line in fh
                if line.strip() and not line.startswith("#") and "pytest" not in line and "statsmodels" not in line]

setup(
    name="urgentcare-absa",
    version="1.0.0",
    description="Aspect-based sentiment pipeline for urgent care reviews with census covariates and rating regressions",
    long_description=read_readme(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Information Analysis",
    ],
    python_requires=">=3.9",
    install_requires=read_requirements(),
    extras_require={
        "test": [
            "pytest>=7.0.0",
            "pytest-cov>=2.12.0",
            "pytest-mock>=3.6.0",
            "statsmodels>=0.13",
        ],
    },
    entry_points={
        "console_scripts": [
            "urgentcare-absa=urgentcare_absa.main:main",
        ],
    },
    keywords="absa, sentiment, llm, urgent-care, census, regression, cli",
)
