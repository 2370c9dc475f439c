"""Training objectives and loss-weight handling"""
