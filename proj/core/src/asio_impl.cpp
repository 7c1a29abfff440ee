// Single translation unit holding the compiled Asio and Beast sources.
#include <boost/asio/impl/src.hpp>
#include <boost/beast/src.hpp>
