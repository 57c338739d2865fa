#pragma once

#include "hetsmcg/adam.hpp"
#include "hetsmcg/matrix.hpp"
#include "hetsmcg/tensor.hpp"
