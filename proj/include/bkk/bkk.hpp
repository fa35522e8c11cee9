#ifndef BKK_BKK_HPP
#define BKK_BKK_HPP

#include <bkk/certify.hpp>
#include <bkk/errors.hpp>
#include <bkk/hunt.hpp>
#include <bkk/kernels.hpp>
#include <bkk/log_value.hpp>
#include <bkk/mc.hpp>
#include <bkk/parallel.hpp>
#include <bkk/pde.hpp>
#include <bkk/quadrature.hpp>
#include <bkk/report.hpp>
#include <bkk/special_fn.hpp>

#endif  // BKK_BKK_HPP
