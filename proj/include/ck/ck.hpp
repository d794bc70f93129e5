#pragma once

#define CK_VERSION_STRING "1.0.0"

#include "ck/cantor_kantorovich.hpp"
#include "ck/gridworld.hpp"
#include "ck/mdp.hpp"
#include "ck/qlearning.hpp"
#include "ck/rng.hpp"
#include "ck/transfer.hpp"
#include "ck/transport.hpp"
