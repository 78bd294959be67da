"""Process-wide configuration"""
