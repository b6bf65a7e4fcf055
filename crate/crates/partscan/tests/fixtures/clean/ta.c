#include <tee_internal_api.h>

TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id,
                                      uint32_t param_types, TEE_Param params[4])
{
    char out[32];
    uint32_t n = 0;

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE,
                                       TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    if (params[0].memref.size > sizeof(out))
        return TEE_ERROR_BAD_PARAMETERS;
    TEE_MemMove(out, params[0].memref.buffer, params[0].memref.size);
    n = params[0].memref.size;
    return TEE_SUCCESS;
}
