char test[256] = {};
// params[1].memref is the copy of op.params[1].tmpref in the normal world
TEE_MemMove(test, params[1].memref.buffer, params[1].memref.size);
