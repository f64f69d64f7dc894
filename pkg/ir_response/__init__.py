# Linear IR response package
