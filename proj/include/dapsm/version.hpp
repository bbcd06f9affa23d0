#pragma once

#define DAPSM_VERSION_MAJOR 0
#define DAPSM_VERSION_MINOR 1
#define DAPSM_VERSION_PATCH 0
#define DAPSM_VERSION "0.1.0"
