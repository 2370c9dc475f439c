"""Tumor-aware unpaired modality translation and pseudo-target synthesis"""
