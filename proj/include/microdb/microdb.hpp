#pragma once

#include "microdb/clock.hpp"
#include "microdb/crypto.hpp"
#include "microdb/database.hpp"
#include "microdb/error.hpp"
#include "microdb/eventbus.hpp"
#include "microdb/harness.hpp"
#include "microdb/infomodel.hpp"
#include "microdb/ingest.hpp"
#include "microdb/record.hpp"
#include "microdb/registry.hpp"
#include "microdb/security.hpp"
#include "microdb/store.hpp"
#include "microdb/sync.hpp"
#include "microdb/value.hpp"
#include "microdb/wire.hpp"
