"""Environment module"""
