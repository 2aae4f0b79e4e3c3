"""Common package"""
