__version__ = '0.1.0'
__copyright__ = 'Copyright © 2026\nThe fixnormlab developers'
