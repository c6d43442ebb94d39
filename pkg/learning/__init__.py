"""
PRISM Learning Module
Angle predictors, training and zero-shot evaluation
"""
