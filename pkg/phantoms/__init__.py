"""Phantom volumes: generation, preprocessing and MVL1 storage"""
