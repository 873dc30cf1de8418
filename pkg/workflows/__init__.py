# Workflows package 