#!/usr/bin/env python

from setuptools import setup, find_packages


VERSION = '1.0.0'

setup_args = dict(
    name='medchain',
    packages=find_packages(),
    entry_points={
        'console_scripts': [
            'medchain=medchain:main',
        ],
    },

    package_data={
        # Logger config, genesis file and bundled scenarios
        '': ['data/*', 'data/scenarios/*'],
    },

    version=VERSION,
    python_requires='>=3.9',
    install_requires=['pyyaml',
                      'ecdsa>=0.18',
                      'cryptography'],
    extras_require={
        'tests': ['hypothesis'],
    },

    description='E-prescription data governance on a simulated blockchain with proxy re-encryption',
    keywords=['proxy re-encryption', 'e-prescription', 'provenance', 'smart contracts'],
    classifiers=[],
    include_package_data=True
)

setup(**setup_args)
