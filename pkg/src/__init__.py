"""Backstepping kernels, gains and closed-loop simulation on n-balls"""
