"""Configuration module for W2Checks"""
from .settings import Config
