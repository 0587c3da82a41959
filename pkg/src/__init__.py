from .config import CODE_VERSION

__version__ = CODE_VERSION
