"""Tests for spincool"""
