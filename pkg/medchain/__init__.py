__version__ = '1.0.0'

from medchain.runner import main
