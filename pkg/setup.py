# coding=utf-8

########################################################################################################################
### Project metadata

# The distribution name
project_name = "goplan"

# The top-level python package
project_package = "goplan"

# The version, kept in sync with goplan.__version__
project_version = "0.1.0"

project_description = """Offline goal-conditioned RL: advantage-weighted CGAN policy, ensemble-dynamics planning
and imagined-trajectory reanalysis on small synthetic environments."""

project_author = "goplan contributors"

project_license = "MIT"

# Runtime requirements
project_requires = ["numpy>=1.24", "matplotlib>=3.7"]

# Requirements of the test suite only
project_test_requires = ["pytest>=7.4", "scikit-learn>=1.3", "scipy>=1.10"]

### --------------------------------------------------------------------------------------------------------------------
### More advanced options that you usually shouldn't have to touch follow after this point
### --------------------------------------------------------------------------------------------------------------------

# Any python packages within <project_package>.* you do NOT want to install
project_ignored_packages = ["test", "test.*"]

additional_setup_parameters = {
    "python_requires": ">=3.10,<4",
    "entry_points": {"console_scripts": ["goplan=goplan.cli.main:main"]},
}

########################################################################################################################

from setuptools import find_packages, setup

setup_parameters = dict(
    name=project_name,
    version=project_version,
    description=project_description,
    author=project_author,
    license=project_license,
    packages=find_packages(include=[project_package, f"{project_package}.*"], exclude=project_ignored_packages),
    install_requires=project_requires,
    extras_require={"test": project_test_requires},
)
setup_parameters.update(additional_setup_parameters)

setup(**setup_parameters)
