#!/usr/bin/env python

try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup

setup(name='pyflashsync',
      version='v0.1',
      packages=['pyflashsync', 'pyflashsync.tasks', 'pyflashsync.tests'],
      install_requires=['numpy', 'scipy', 'astropy', 'matplotlib'],
      tests_require=['pytest'],
      entry_points={'console_scripts': ['pyflashsync = pyflashsync.cli:main']},
      description='sub-millisecond synchronization of rolling shutter cameras '
                  'with flash events')
