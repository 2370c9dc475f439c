"""Segmentation metrics and experiment reports"""
