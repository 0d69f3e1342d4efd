# Cohort quality monitoring package
