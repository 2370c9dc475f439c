"""3D target-modality segmentation with presence/absence disentanglement"""
