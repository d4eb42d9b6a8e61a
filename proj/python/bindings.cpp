#include <pybind11/pybind11.h>
PYBIND11_MODULE(emkat, m) { m.doc() = "stub"; }
