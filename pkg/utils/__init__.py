# Utils package for pragmabench logging and helper functions
