from setuptools import setup, find_packages

setup(
    name='pylayersep',
    version='0.1.0',
    description='Layer separation and disparity refinement for light fields with reflections',
    packages=find_packages(exclude=['tests']),
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.12',
        'numba>=0.57',
        'opencv-python>=4.6',
        'matplotlib>=3.5',
        'python-dotenv>=0.21'
    ],
    extras_require={
        'test': ['pytest>=7', 'scikit-image>=0.20']
    },
    entry_points={
        'console_scripts': ['pylayersep=pylayersep.cli:main']
    }
)
