from setuptools import setup, find_packages
from glob import glob

# Run configurations shipped next to the package
data_files = [('share/quadtune/configs',
               [x for x in glob('configs/*.conf') if x[-1:] != '~'])]

setup(name='quadtune',
      version='0.1.0',
      description='Quadrotor simulator with DDPG tuning of cascaded attitude gains',  # noqa: E501
      author='The quadtune authors',
      packages=find_packages(exclude=['tests']),
      data_files=data_files,
      python_requires='>=3.8',
      install_requires=[
          'numpy',
          'pandas>=1.5'
      ],
      classifiers=[
          "Programming Language :: Python :: 3",
          "License :: OSI Approved :: BSD License",
          "Operating System :: OS Independent",
      ])
