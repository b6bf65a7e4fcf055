#include <tee_internal_api.h>

void test(char *dest, char *src)
{
    TEE_MemMove(dest, src, strlen(src));
}

TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id,
                                      uint32_t param_types, TEE_Param params[4])
{
    char key[] = "123456";
    char *str = TEE_Malloc(strlen(key) + 1, 0);

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_OUTPUT,
                                       TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    // case 1
    test(str, key);
    // case 2
    test(params[1].memref.buffer, key);
    return TEE_SUCCESS;
}
