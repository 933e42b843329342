#pragma once

#include "usrlsh/baseline_hashers.hpp"
#include "usrlsh/binary_code.hpp"
#include "usrlsh/binary_index.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/dataset.hpp"
#include "usrlsh/dataset_io.hpp"
#include "usrlsh/eval.hpp"
#include "usrlsh/hasher.hpp"
#include "usrlsh/multiprobe.hpp"
#include "usrlsh/projection.hpp"
#include "usrlsh/random.hpp"
#include "usrlsh/unlearning_store.hpp"
#include "usrlsh/usr_hasher.hpp"
