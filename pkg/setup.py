"""A setuptools based setup module."""

from setuptools import setup, find_packages
from pathlib import Path

here = Path(__file__).parent.resolve()

# Get the long description from the README file
with open(here/'README.md') as f:
    long_description = f.read()

with open(here/'fixnormlab'/'version.py') as f:
    exec(f.read())

setup(
    name='fixnormlab',
    version=__version__,
    description='Desk-scale training with fixed weight norms and a capped '
                'classifier gain',
    long_description=long_description,
    long_description_content_type='text/markdown',

    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.7',
        'Environment :: Console',
    ],
    keywords='neural-networks weight-normalization hyperparameter-tuning',

    packages=find_packages(exclude=['contrib', 'docs', 'tests']),
    python_requires='>=3.7',

    # numpy carries every array; requests fetches the MNIST and CIFAR-10 files.
    install_requires=['numpy', 'requests'],

    package_data={},
    data_files=[],

    entry_points={
        'console_scripts': [
            'fixnormlab=fixnormlab:fixnormlab',
        ],
    },
)
