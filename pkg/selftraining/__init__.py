"""Confidence-thresholded pseudo-labels and iterative self-training"""
