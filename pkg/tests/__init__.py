"""To run tests of the tcs_sdk package."""
