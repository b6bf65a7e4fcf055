// params[0].memref is a memory copy of op.params[0].tmpref in the normal world
snprintf(params[0].memref.buffer, params[0].memref.size, "delta (decoder) refcount %u\n", delta_refcount);
// params[0].memref will be copied to op.params[0].tmpref after return
return TEE_SUCCESS;
