# ReLU network unwrapping: local linear models, regions, trees and exact SHAP
__version__ = "1.0.0"
