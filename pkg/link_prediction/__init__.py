# HyperKG link prediction Django app
