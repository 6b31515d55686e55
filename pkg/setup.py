#!/usr/bin/python
"""
Package setup.
"""

from setuptools import setup, find_packages


def readme():
    """
    Pull the readme contents for the package properties.
    """
    with open('README.md') as readme_file:
        return readme_file.read()


setup(
    name='offpolicymc',
    version='1.0.0',
    description=('Variance-reduced off-policy Monte Carlo evaluation for finite-horizon tabular MDPs'),
    long_description=readme(),
    long_description_content_type='text/markdown',
    keywords=['python', 'reinforcement-learning', 'off-policy', 'importance-sampling', 'monte-carlo'],

    python_requires='>=3.8',
    install_requires=[
        'joblib',
        'numpy',
        'pandas',
        'ruamel.yaml',
    ],
    package_data={
        'offpolicymc': ['configs/*.yaml'],
    },
    package_dir={'': 'src'},
    packages=find_packages('src'),
    setup_requires=[
    ],
    tests_require=[
        'mock',
        'pytest',
    ],
    entry_points={
        'console_scripts': [
            'offpolicy-mc=offpolicymc.experiment:main',
        ],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'Topic :: Scientific/Engineering :: Mathematics'
    ],
)
